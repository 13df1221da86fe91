use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cwherald::experiment::{
    run_delay_sweep, run_end_to_end, run_fixed_mode_sweep, run_fock_panels, run_g2, run_reconstruct, ExperimentConfig,
    ExperimentError, RunOutput,
};

#[derive(Parser)]
#[command(
    name = "cwherald",
    version,
    about = "Simulate time-separated heralding of two-photon states from a CW squeezer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `samples_per_point`.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Click-stream `g²(Δt)` against the closed form.
    G2(Common),
    /// Adapted-mode two-photon weight against delay.
    SweepDelay(Common),
    /// Fixed-mode photon statistics against delay.
    SweepFixed(Common),
    /// Photon statistics in g1, g2, f1 and f2 at one delay.
    FockPanels {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 40.0)]
        delta_t_ns: f64,
    },
    /// Clicks, coincidences, homodyne traces and per-bin tomography.
    EndToEnd(Common),
    /// Tomography of a quadrature CSV with columns `x,theta_rad,delta_t_ns`.
    Reconstruct {
        samples_csv: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Also reconstruct the full density matrix from phase-resolved data.
        #[arg(long)]
        full: bool,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.rng_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = common.samples {
        cfg.samples_per_point = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

type Job = Box<dyn Fn(&ExperimentConfig) -> Result<RunOutput, ExperimentError>>;

fn run(command: &Command) -> Result<(), ExperimentError> {
    let (common, job): (&Common, Job) = match command {
        Command::G2(c) => (c, Box::new(run_g2)),
        Command::SweepDelay(c) => (c, Box::new(run_delay_sweep)),
        Command::SweepFixed(c) => (c, Box::new(run_fixed_mode_sweep)),
        Command::FockPanels { common, delta_t_ns } => {
            let d = *delta_t_ns;
            (common, Box::new(move |cfg| run_fock_panels(cfg, d)))
        }
        Command::EndToEnd(c) => (c, Box::new(run_end_to_end)),
        Command::Reconstruct {
            samples_csv,
            common,
            full,
        } => {
            let (path, full) = (samples_csv.clone(), *full);
            (common, Box::new(move |cfg| run_reconstruct(cfg, &path, full)))
        }
    };
    let cfg = load(common)?;
    log::info!("{} with seed {}", cfg.output_dir.display(), cfg.rng_seed);
    let output = job(&cfg)?;
    output.write(&cfg.output_dir, &cfg)?;
    println!(
        "{}",
        serde_json::json!({ "command": output.command, "output_dir": cfg.output_dir, "summary": output.summary })
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
