//! `lgdcap`: simulate data, fit the model and estimate economic capital.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lgdcap::config::RunConfig;
use lgdcap::pipeline;
use lgdcap::Error;

#[derive(Parser, Debug)]
#[command(
    name = "lgdcap",
    version,
    about = "Economic capital with correlated default and recovery risk"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a yearly dataset and its true factor path.
    Simulate(Common),
    /// Two-stage approximate maximum-likelihood fit.
    FitMle(Common),
    /// Metropolis–Hastings sampling of parameters and factors.
    FitMcmc(Common),
    /// Capital estimates from a posterior chain.
    Capital(Common),
    /// Posterior summary table from a chain file.
    Summarize(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Dataset CSV (`year,obligors,defaults,avg_recovery`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Chain file for `capital` and `summarize` (default `<out>/chain.csv`).
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> lgdcap::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(Error::Config("--threads must be at least 1".into()));
            }
            cfg.threads = Some(t);
        }
        if let Some(c) = &self.chain {
            cfg.chain = Some(c.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(command: Command) -> lgdcap::Result<()> {
    let common = match &command {
        Command::Simulate(c)
        | Command::FitMle(c)
        | Command::FitMcmc(c)
        | Command::Capital(c)
        | Command::Summarize(c) => c,
    };
    let cfg = common.config()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Simulate(_) => {
            pipeline::run_simulate(&cfg)?;
            println!("wrote {}", cfg.out.join(pipeline::DATASET_FILE).display());
            Ok(())
        }
        Command::FitMle(_) => {
            let fit = pipeline::run_fit_mle(&cfg)?;
            if fit.omega_at_upper_bound {
                eprintln!("warning: recovery factor loading estimate at its upper bound");
            }
            println!("wrote {}", cfg.out.join(pipeline::MLE_FILE).display());
            Ok(())
        }
        Command::FitMcmc(_) => {
            let samples = pipeline::run_fit_mcmc(&cfg)?;
            for w in &samples.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {}", cfg.out.join(pipeline::CHAIN_FILE).display());
            Ok(())
        }
        Command::Capital(_) => {
            pipeline::run_capital(&cfg, &cfg.chain_path())?;
            println!(
                "wrote {}",
                cfg.out.join(pipeline::CAPITAL_REPORT_FILE).display()
            );
            Ok(())
        }
        Command::Summarize(_) => {
            pipeline::run_summarize(&cfg)?;
            println!("wrote {}", cfg.out.join(pipeline::SUMMARY_FILE).display());
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
