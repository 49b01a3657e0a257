use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use courtfactor::config::{PipelineConfig, OUT_ENV};
use courtfactor::eval::{ComparisonConfig, ModelKind};
use courtfactor::nmf::Loss;
use courtfactor::pipeline::{self, EvaluateFiles, FactorInput};
use courtfactor::synth::generate_dataset;
use courtfactor::{Error, Result};

#[derive(Parser)]
#[command(name = "courtfactor", version, about = "Shot-chart intensity fitting, factorization and efficiency models")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log stage progress.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Kl,
    Frobenius,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputArg {
    Lgcp,
    Counts,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted bases.
    Synth {
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        bases: Option<usize>,
    },
    /// Filter a shot CSV by attempts and build its count matrix.
    Ingest {
        #[arg(long)]
        shots: PathBuf,
        #[arg(long)]
        min_attempts: Option<usize>,
    },
    /// Fit an independent LGCP surface to each row of a count matrix.
    FitLgcp {
        #[arg(long)]
        counts: PathBuf,
    },
    /// Non-negative factorization of LGCP surfaces or raw counts.
    Factorize {
        /// Surface CSV (for `--input lgcp`) or count CSV (for `--input counts`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "lgcp")]
        input: InputArg,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "kl")]
        loss: LossArg,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Fit the per-basis efficiency model to shots using saved loadings.
    FitEfficiency {
        #[arg(long)]
        shots: PathBuf,
        /// Directory holding W.csv, B.csv and manifest.txt.
        #[arg(long)]
        factors: PathBuf,
    },
    /// Held-out comparison of independent LGCP, NMF variants and PCA.
    Evaluate {
        #[arg(long)]
        train_counts: PathBuf,
        #[arg(long)]
        test_counts: PathBuf,
        /// LGCP surfaces fit to the train counts.
        #[arg(long)]
        surfaces: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Render rows of a surface CSV as PGM heatmaps.
    Render {
        #[arg(long)]
        surfaces: PathBuf,
        /// Row labels to render; all rows when omitted.
        #[arg(long, value_delimiter = ',')]
        rows: Option<Vec<String>>,
    },
    /// Run every stage from ingest to render.
    Pipeline,
}

fn load_config(shared: &Shared) -> Result<PipelineConfig> {
    let mut config = match (&shared.config, shared.seed) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Some(seed)) => {
            let mut c = PipelineConfig::with_seed(seed);
            if let Some(out) = std::env::var_os(OUT_ENV) {
                c.paths.out = PathBuf::from(out);
            }
            c
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "a seed is required: pass --seed or set `seed` in --config".into(),
            ))
        }
    };
    if let Some(seed) = shared.seed {
        config.seed = seed;
    }
    if let Some(out) = &shared.out {
        config.paths.out = out.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli.shared)?;
    let out: &Path = &config.paths.out.clone();
    match cli.command {
        Command::Synth { players, bases } => {
            if let Some(p) = players {
                config.synth.players = p;
            }
            if let Some(b) = bases {
                config.synth.bases = b;
            }
            let data = generate_dataset(&config.synth_config()?, out)?;
            println!("wrote {} shots for {} players to {}", data.shots.len(), data.truth.players.len(), out.display());
        }
        Command::Ingest { shots, min_attempts } => {
            let min = min_attempts.unwrap_or(config.data.min_attempts);
            let counts = pipeline::ingest(&shots, config.grid.grid()?, min, &out.join("shots.csv"), &out.join("counts.csv"))?;
            println!("{} players with at least {min} attempts", counts.n_players());
        }
        Command::FitLgcp { counts } => {
            pipeline::fit_lgcp_file(
                &counts,
                &config.lgcp_config(),
                config.kernel.jitter(),
                &out.join("surfaces.csv"),
                &out.join("fit.json"),
            )?;
            println!("wrote {}", out.join("surfaces.csv").display());
        }
        Command::Factorize { data, input, k, loss, restarts } => {
            let mut nmf = config.nmf_config();
            if let Some(r) = restarts {
                nmf.restarts = r;
            }
            let loss = match loss {
                LossArg::Kl => Loss::Kl,
                LossArg::Frobenius => Loss::Frobenius,
            };
            let input = match input {
                InputArg::Lgcp => FactorInput::Lgcp,
                InputArg::Counts => FactorInput::Counts,
            };
            let model = pipeline::factorize_file(input, &data, k, loss, &nmf, out)?;
            if !model.is_finite() {
                return Err(Error::InvalidParameter(
                    "factorization diverged to an infinite loss; raw counts need a positive count_jitter".into(),
                ));
            }
            println!("K={k} {loss} loss {:e} after {} iterations", model.final_loss, model.iterations);
        }
        Command::FitEfficiency { shots, factors } => {
            pipeline::fit_efficiency_files(&shots, &factors, &config.efficiency_config(), out)?;
            println!("wrote efficiency fit to {}", out.display());
        }
        Command::Evaluate { train_counts, test_counts, surfaces, ks, truth } => {
            let normalized = out.join("normalized.csv");
            let volumes = out.join("volumes.csv");
            pipeline::normalize_file(&surfaces, &normalized, &volumes)?;
            let files = EvaluateFiles {
                train_counts,
                test_counts,
                surfaces: normalized,
                volumes,
                factor_dirs: Vec::new(),
                truth_bases: truth,
            };
            let comparison = ComparisonConfig {
                ks: ks.unwrap_or_else(|| config.nmf.ks.clone()),
                models: if config.nmf.models.is_empty() { ModelKind::ALL.to_vec() } else { config.nmf.models.clone() },
                nmf: config.nmf_config(),
            };
            let report = pipeline::evaluate_files(&files, config.data.holdout_fraction, &comparison, out)?;
            print!("{}", report.summary());
        }
        Command::Render { surfaces, rows } => {
            let written = pipeline::render_file(&surfaces, rows.as_deref(), out, "")?;
            println!("rendered {} images to {}", written.len(), out.display());
        }
        Command::Pipeline => {
            let report = pipeline::run_pipeline(&config)?;
            for (stage, status) in &report.stages {
                println!("{stage}: {status:?}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.shared.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    env_logger::Builder::new().filter_level(level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
