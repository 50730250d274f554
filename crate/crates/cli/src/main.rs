use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mrepp::harness::{self, ExperimentConfig};
use mrepp::simgen::generate;
use mrepp::Error;

#[derive(Parser, Debug)]
#[command(author, version, about = "Seeded spatial-prediction experiments with PP, EPP and MREPP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one dataset and write it as CSV
    Simulate(Common),
    /// Run every configured method on every replicate
    Run(Common),
    /// Audit GP and PP influence functions against their bounds
    Influence(Common),
    /// Fit convergence slopes over the configured sample-size grid
    Slopes(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment configuration
    #[arg(long)]
    config: PathBuf,

    /// Base seed; overrides scenario.seed
    #[arg(long)]
    seed: Option<u64>,

    /// Output path; a file for simulate and influence, a directory otherwise
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads; overrides parallel_jobs
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.scenario.seed = seed;
        }
        if let Some(jobs) = self.jobs {
            cfg.parallel_jobs = jobs;
        }
        if let Some(out) = &self.out {
            cfg.output_path = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn file_out(&self, cfg: &ExperimentConfig, default_name: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| cfg.output_path.join(default_name))
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn simulate(args: &Common) -> Result<(), Error> {
    let cfg = args.load()?;
    let data = generate(&cfg.scenario)?;
    let path = args.file_out(&cfg, "dataset.csv");
    write_file(&path, &data.to_csv_bytes(None))?;
    println!(
        "wrote {} training and {} test rows to {}",
        data.n(),
        data.test_locations.len(),
        path.display()
    );
    Ok(())
}

fn run(args: &Common) -> Result<(), Error> {
    let cfg = args.load()?;
    std::fs::create_dir_all(&cfg.output_path)?;
    let report = harness::run(&cfg)?;
    report.write_to(&cfg.output_path)?;
    let failed = report.rows.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{} result rows ({failed} failed) written to {}",
        report.rows.len(),
        cfg.output_path.display()
    );
    Ok(())
}

fn influence(args: &Common) -> Result<(), Error> {
    let cfg = args.load()?;
    let path = args.file_out(&cfg, "influence.csv");
    let report = harness::influence_audit(&cfg)?;
    write_file(&path, report.csv().as_bytes())?;
    println!(
        "{} audit rows, {} bound violations, written to {}",
        report.rows.len(),
        report.total_violations(),
        path.display()
    );
    Ok(())
}

fn slopes(args: &Common) -> Result<(), Error> {
    let cfg = args.load()?;
    std::fs::create_dir_all(&cfg.output_path)?;
    let report = harness::run_slopes(&cfg)?;
    report.write_to(&cfg.output_path)?;
    for (method, fit) in &report.fits {
        match fit {
            Ok(f) => println!("{method}: slope {:.4} (se {:.4}, {} sizes)", f.slope, f.std_err, f.n_values),
            Err(e) => println!("{method}: no slope ({e})"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Influence(a) => influence(a),
        Command::Slopes(a) => slopes(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_config() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
