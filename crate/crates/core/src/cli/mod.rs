//! The `dadp` command: argument parsing and dispatch.
//!
//! ```text
//! dadp [--config PATH] [--seed N] [--out DIR] [--threads N] [--format csv|text] <verb>
//! ```
//!
//! Verbs run one pipeline stage each: `gen-data`, `train-encoder`,
//! `probe`, `train-policy`, `eval`, `sweep`, `report`. Exit status is 0 on
//! success, 2 for invalid configuration or input, 3 for lineage
//! mismatches, 4 for numerical failures and 1 for I/O errors.

pub mod artifact;
pub mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
pub use commands::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dadp", version, about = "Domain-adaptive diffusion policies on toy dynamics")]
pub struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory of the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for rollout evaluation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: FormatArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate the expert dataset.
    GenData,
    /// Train one context encoder per replicate seed.
    TrainEncoder,
    /// Compare representations across context lags.
    Probe,
    /// Train every configured policy variant.
    TrainPolicy,
    /// Zero-shot evaluation on training and held-out domains.
    Eval,
    /// Guidance-scale sweep.
    Sweep,
    /// Consolidate the artifacts of an output directory.
    Report {
        /// Directory to summarize; defaults to the configured output.
        dir: Option<PathBuf>,
    },
}

impl Cli {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => return Err(Error::Config("--config is required for this command".into())),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs one parsed invocation and returns what it prints on success.
pub fn run(cli: &Cli) -> Result<String> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be >= 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let format = Format::from(cli.format);
    match &cli.command {
        Command::GenData => done(commands::gen_data(&cli.experiment()?)?),
        Command::TrainEncoder => done(commands::train_encoders(&cli.experiment()?)?),
        Command::Probe => {
            let cfg = cli.experiment()?;
            let m = commands::probe(&cfg)?;
            let body = std::fs::read_to_string(cfg.output_dir.join("probe.csv"))?;
            Ok(format!("{}{}", body.split_once('\n').map_or("", |(_, b)| b), manifest_line(&m)))
        }
        Command::TrainPolicy => done(commands::train_policies(&cli.experiment()?)?),
        Command::Eval => {
            let reports = commands::eval(&cli.experiment()?)?;
            let mut s = String::new();
            if format == Format::Csv {
                s.push_str(commands::SUMMARY_HEADER);
            }
            for (v, r) in &reports {
                match format {
                    Format::Text => s.push_str(&format!("{} {}", v.name(), r.summary())),
                    Format::Csv => s.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{}\n",
                        v.name(),
                        r.mode.name(),
                        r.seeds,
                        r.iid_normalized,
                        r.iid_std,
                        r.ood_normalized,
                        r.ood_std,
                        r.mastery,
                        r.mastery_std
                    )),
                }
            }
            Ok(s)
        }
        Command::Sweep => {
            let rows = commands::sweep(&cli.experiment()?)?;
            let mut s = String::new();
            for (v, r) in &rows {
                s.push_str(&format!("{}\n{}", v.name(), crate::rollout::sweep_csv(r)));
            }
            Ok(s)
        }
        Command::Report { dir } => {
            let dir = match dir {
                Some(d) => d.clone(),
                None => match &cli.out {
                    Some(o) => o.clone(),
                    None => cli.experiment()?.output_dir,
                },
            };
            let text = commands::report(&dir, format)?;
            let name = match format {
                Format::Csv => "report.csv",
                Format::Text => "report.txt",
            };
            std::fs::write(dir.join(name), &text)?;
            Ok(text)
        }
    }
}

fn manifest_line(m: &artifact::Manifest) -> String {
    format!("{}: wrote {} file(s)\n", m.stage, m.files.len())
}

fn done(m: artifact::Manifest) -> Result<String> {
    Ok(manifest_line(&m))
}

/// Entry point of the binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
