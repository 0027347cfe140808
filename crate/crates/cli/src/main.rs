//! `qhplasma` command-line driver.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, Overrides, RunConfig};
use output::{manifest_path, write_json, Artifacts, Manifest};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) | Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(s) => write!(f, "usage error: {s}"),
            Failure::Numerical(s) => write!(f, "numerical failure: {s}"),
            Failure::Io(s) => write!(f, "i/o error: {s}"),
        }
    }
}

impl From<qhplasma::Error> for Failure {
    fn from(e: qhplasma::Error) -> Self {
        use qhplasma::Error as E;
        match e {
            E::InvalidParams(_) | E::Parse(_) | E::Unsupported(_) | E::Unbounded | E::Resource { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "qhplasma", version, about = "Plasma analogy toolkit for rotating quasi-hole states")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the file and QHPLASMA_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the mean-field problem and write the radial profiles.
    Meanfield(Common),
    /// Sample the plasma Gibbs measure.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Write the final chain state here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a checkpoint instead of burning in.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Exact diagonalization of the contact interaction.
    Ed(Common),
    /// Trial-state energy decomposition and bounds.
    Energy(Common),
    /// Closed-form phase diagram over a grid of omega.
    PhaseDiagram(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    g: Option<f64>,
    #[arg(long = "T", allow_hyphen_values = true)]
    temperature: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Recorded sweeps.
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thinning: Option<usize>,
    /// Proposal step; 0 means sqrt(T).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    target_acceptance: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    l_min: Option<usize>,
    #[arg(long)]
    l_max: Option<usize>,
    /// Also write the Laughlin state coefficients.
    #[arg(long)]
    laughlin: bool,
    /// Comma-separated vortex charges.
    #[arg(long, value_delimiter = ',')]
    m_values: Option<Vec<u64>>,
    /// Evaluate energies with Monte Carlo.
    #[arg(long)]
    mc: bool,
    #[arg(long, allow_hyphen_values = true)]
    omega_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

impl Common {
    fn overrides(&self, out: Option<PathBuf>) -> Overrides {
        Overrides {
            n: self.n,
            m: self.m,
            omega: self.omega,
            k: self.k,
            g: self.g,
            temperature: self.temperature,
            seed: self.seed,
            step_size: self.step,
            n_burnin: self.burnin,
            n_samples: self.sweeps,
            thinning: self.thinning,
            target_acceptance: self.target_acceptance,
            n_bins: self.bins,
            r_max: self.r_max,
            tol: self.tol,
            l_min: self.l_min,
            l_max: self.l_max,
            laughlin: self.laughlin,
            m_values: self.m_values.clone(),
            mc: self.mc,
            omega_min: self.omega_min,
            omega_max: self.omega_max,
            points: self.points,
            out_dir: out,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Meanfield(c) => ("meanfield", c),
        Command::Sample { common, .. } => ("sample", common),
        Command::Ed(c) => ("ed", c),
        Command::Energy(c) => ("energy", c),
        Command::PhaseDiagram(c) => ("phase-diagram", c),
    };
    let cfg = match load(&cli, name, common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qhplasma: {e}");
            return ExitCode::from(e.code());
        }
    };
    let start = Instant::now();
    let result = run(&cli.command, &cfg);
    let elapsed = start.elapsed().as_secs_f64();
    let (status, error, artifacts, failure) = match result {
        Ok(a) => ("ok", None, a, None),
        Err(e) => ("error", Some(e.to_string()), Artifacts::default(), Some(e)),
    };
    let manifest = Manifest {
        toolkit: "qhplasma",
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        config_hash: cfg.hash(),
        config: serde_json::to_value(&cfg).expect("config serializes"),
        status,
        error,
        wall_clock_seconds: elapsed,
        outputs: artifacts.outputs.iter().map(|p| p.display().to_string()).collect(),
        diagnostics: artifacts.diagnostics,
        constants: artifacts.constants,
    };
    if let Err(e) = write_json(&manifest_path(&cfg), &manifest) {
        eprintln!("qhplasma: {e}");
        return ExitCode::from(e.code());
    }
    match failure {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("qhplasma: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn load(cli: &Cli, name: &str, common: &Common) -> Result<RunConfig, Failure> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(name, file, common.overrides(cli.out.clone()))?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Failure::Io(format!("{}: {e}", cfg.out_dir.display())))?;
    Ok(cfg)
}

fn run(command: &Command, cfg: &RunConfig) -> Result<Artifacts, Failure> {
    match command {
        Command::Meanfield(_) => commands::meanfield(cfg),
        Command::Sample {
            checkpoint, resume, ..
        } => commands::sample(cfg, checkpoint.as_deref(), resume.as_deref()),
        Command::Ed(_) => commands::ed(cfg),
        Command::Energy(_) => commands::energy(cfg),
        Command::PhaseDiagram(_) => commands::phase(cfg),
    }
}
