use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmcmc::commands;
use pmcmc::error::{Error, ErrorKind, Result};
use pmcmc::io::{write_json, RunConfig};

#[derive(Parser)]
#[command(
    name = "pmcmc",
    version,
    about = "Particle MCMC with correlated random numbers"
)]
struct Cli {
    /// Worker threads for series-level parallelism (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic dataset from the `[simulate]` section.
    Simulate(RunArgs),
    /// Run the sampler on the configured data.
    Fit {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from `checkpoint.cbor` in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Efficiency report for a draw file.
    Diagnose {
        /// Draw file written by `fit`.
        draws: PathBuf,
        #[arg(long, default_value = "run")]
        label: String,
        /// Seconds per sweep; read from the neighbouring run.json if omitted.
        #[arg(long)]
        ct: Option<f64>,
        /// Report to compute RTNV against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Relative time-normalized variance of one report against another.
    Compare {
        report: PathBuf,
        baseline: PathBuf,
        /// Directory for compare.json and compare.txt; printed only if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact Kalman filter and smoother for the linear-Gaussian model.
    Kalman(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self, threads: Option<usize>) -> Result<RunConfig> {
        let mut c = RunConfig::load(&self.config)?;
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.particles {
            c.particles = v;
        }
        if let Some(v) = self.sweeps {
            c.sweeps = v;
        }
        if let Some(v) = self.burn_in {
            c.burn_in = v;
        }
        if let Some(v) = &self.out {
            c.out = Some(v.clone());
        }
        if threads.is_some() {
            c.threads = threads;
        }
        Ok(c)
    }
}

fn init_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::config("threads", "must be positive"));
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let c = a.resolve(cli.threads)?;
            let dir = commands::simulate(&c)?;
            println!("wrote {}", dir.display());
        }
        Command::Fit { run, resume } => {
            let mut c = run.resolve(cli.threads)?;
            c.resume |= resume;
            init_threads(c.threads)?;
            let s = commands::fit(&c)?;
            println!("{} draws, {:.4} s/sweep", s.n_draws, s.seconds_per_sweep);
            for (name, rate) in &s.acceptance {
                println!("  accept {name}: {rate:.3}");
            }
        }
        Command::Diagnose {
            draws,
            label,
            ct,
            baseline,
            out,
        } => {
            commands::diagnose(&draws, &label, ct, baseline.as_deref(), &out)?;
            let p = out.join(commands::REPORT_TABLE_FILE);
            print!(
                "{}",
                std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?
            );
        }
        Command::Compare {
            report,
            baseline,
            out,
        } => {
            let (r, table) = commands::compare(&report, &baseline)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                write_json(&dir.join("compare.json"), &r)?;
                let p = dir.join("compare.txt");
                std::fs::write(&p, &table).map_err(|e| Error::io(&p, e))?;
            }
            print!("{table}");
        }
        Command::Kalman(a) => {
            let c = a.resolve(cli.threads)?;
            let k = commands::kalman(&c)?;
            println!("log-likelihood {:.10}", k.log_likelihood);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Numeric => 3,
                ErrorKind::Data => 4,
            })
        }
    }
}
