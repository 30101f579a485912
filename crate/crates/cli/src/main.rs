mod commands;
mod config;
mod figures;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{ChannelSpec, ExperimentConfig, InputSpec, SnrSpec};
use std::path::PathBuf;
use std::process::ExitCode;

/// Failure classes, mapped to exit codes 2 and 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    /// Prefixes the SNR point that failed, keeping the class.
    pub fn at(self, snr_db: f64) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("at {snr_db} dB: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("at {snr_db} dB: {m}")),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<isi_core::Error> for CliError {
    fn from(e: isi_core::Error) -> Self {
        use isi_core::Error::*;
        match e {
            InvalidChannel(_) | InvalidDistribution(_) | DomainError(_) | InvalidParams(_) | PartitionInvalid(_)
            | NormalizationViolated(_) | SnrTooLow(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("csv: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "isi-rates", version, about = "Information-rate bounds for ISI channels with finite-alphabet inputs")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ISI_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Channel, input and SNR, from flags or a JSON config file.
#[derive(Args, Clone, Default)]
pub struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset (channel_b, jeong, jeong_spaced, two_tap(q)), JSON tap array, or file.
    #[arg(long)]
    channel: Option<String>,
    /// Rescale the channel to unit energy.
    #[arg(long)]
    normalize: bool,
    /// bpsk, skewed_binary(p), trinary(p), JSON {"atoms":[..],"probs":[..]}, or file.
    #[arg(long)]
    input: Option<String>,
    /// SNR P_x/N₀ in dB: `a:b:step`, a comma list, or one value.
    #[arg(long = "snr-db", allow_hyphen_values = true)]
    snr_db: Option<String>,
}

impl Common {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(c) = &self.channel {
            cfg.channel = Some(ChannelSpec::Named(c.clone()));
        }
        cfg.normalize |= self.normalize;
        if let Some(i) = &self.input {
            cfg.input = Some(InputSpec::Named(i.clone()));
        }
        if let Some(s) = &self.snr_db {
            cfg.snr_db = Some(SnrSpec::Text(s.clone()));
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Equalizer SNRs, gains and I_SL over an SNR grid (CSV).
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Unbiased MMSE-DFE design at one SNR (JSON).
    Dfe {
        #[command(flatten)]
        common: Common,
        /// Feedforward half length M (default max(8L, 64), doubled as needed).
        #[arg(long)]
        half_len: Option<usize>,
        /// Also write the residual ISI taps to this CSV file.
        #[arg(long)]
        taps: Option<PathBuf>,
    },
    /// All bounds and approximations over an SNR grid (CSV).
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        half_len: Option<usize>,
        /// Mixture-component budget for exact I_MMSE.
        #[arg(long)]
        budget: Option<u64>,
        /// Monte-Carlo samples when the budget is exceeded.
        #[arg(long)]
        mc_samples: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated i.i.d.-input information rate at one SNR (JSON).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Symbols per seed.
        #[arg(long)]
        n: Option<u64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Use seeds 1..=k.
        #[arg(long, conflicts_with = "seeds")]
        n_seeds: Option<u64>,
        #[arg(long, default_value_t = 1)]
        renorm_period: usize,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Equivocation)]
        estimator: EstimatorArg,
        /// Write one row per seed to this CSV file.
        #[arg(long)]
        per_seed_csv: Option<PathBuf>,
    },
    /// Minimum error-event distance δ²_min and its comparison with g_ZF-DFE (JSON).
    Dmin {
        #[command(flatten)]
        common: Common,
        /// Longest event searched (default 4L).
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// High-SNR comparison of H − 𝓘 and H − I_SL bounds (JSON).
    HighsnrProbe {
        #[command(flatten)]
        common: Common,
        /// Sequence-detector constant K′ (default 1.0).
        #[arg(long)]
        k_prime: Option<f64>,
    },
    /// Regenerate the data behind one figure.
    Figure {
        #[arg(value_enum)]
        name: figures::FigureName,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Full-length simulations instead of the desk-scale profile.
        #[arg(long)]
        full: bool,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Symbols per seed for rate simulations.
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        mc_samples: Option<u64>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum EstimatorArg {
    OutputEntropy,
    Equivocation,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Analyze { common, out } => commands::analyze(&common.resolve()?, out),
        Command::Dfe { common, half_len, taps } => commands::dfe(&common.resolve()?, half_len, taps),
        Command::Bounds {
            common,
            half_len,
            budget,
            mc_samples,
            seed,
            out,
        } => {
            let mut cfg = common.resolve()?;
            cfg.half_len = half_len.or(cfg.half_len);
            cfg.budget = budget.or(cfg.budget);
            cfg.n_samples = mc_samples.or(cfg.n_samples);
            if let Some(s) = seed {
                cfg.seeds = Some(vec![s]);
            }
            commands::bounds(&cfg, out)
        }
        Command::Simulate {
            common,
            n,
            seeds,
            n_seeds,
            renorm_period,
            estimator,
            per_seed_csv,
        } => {
            let mut cfg = common.resolve()?;
            cfg.n_symbols = n.or(cfg.n_symbols);
            if let Some(s) = seeds {
                cfg.seeds = Some(s);
            } else if let Some(k) = n_seeds {
                cfg.seeds = Some((1..=k).collect());
            }
            commands::simulate(&cfg, renorm_period, estimator, per_seed_csv)
        }
        Command::Dmin { common, max_len } => commands::dmin(&common.resolve()?, max_len),
        Command::HighsnrProbe { common, k_prime } => {
            let mut cfg = common.resolve()?;
            cfg.k_prime = k_prime.or(cfg.k_prime);
            commands::highsnr_probe(&cfg)
        }
        Command::Figure {
            name,
            common,
            out_dir,
            full,
            seeds,
            n,
            mc_samples,
        } => {
            let mut cfg = common.resolve()?;
            cfg.seeds = seeds.or(cfg.seeds);
            cfg.n_symbols = n.or(cfg.n_symbols);
            cfg.n_samples = mc_samples.or(cfg.n_samples);
            figures::run_figure(name, &cfg, &out_dir, full)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
