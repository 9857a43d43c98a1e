use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinrelax_cli::commands::{self, Overrides, Session, ToyPreset};
use spinrelax_cli::error::{CliError, CliResult, EXIT_USAGE};
use spinrelax_cli::examples;
use spinrelax_cli::project::SweepDoc;
use spinrelax_core::coupling::Channel;
use spinrelax_core::sweep::{SweepAxis, DEFAULT_CONVERGENCE_THRESHOLD};

#[derive(Parser, Debug)]
#[command(name = "spinrelax", version, about = "Direct one-phonon spin-lattice relaxation times")]
struct Cli {
    /// Project configuration (JSON).
    #[arg(long, global = true, default_value = "project.json")]
    config: PathBuf,
    /// Brillouin-zone grid, "n" or "n1,n2,n3".
    #[arg(long, global = true)]
    grid: Option<String>,
    /// Gaussian breadth in cm-1.
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Temperature in K.
    #[arg(long = "temp", global = true)]
    temperature: Option<f64>,
    /// Field "Bx,By,Bz" in T.
    #[arg(long, global = true, allow_hyphen_values = true)]
    field: Option<String>,
    /// "all" or a comma-separated subset of zeeman, hyperfine, dipolar.
    #[arg(long, global = true)]
    channels: Option<String>,
    /// Keep only the secular part of the Redfield tensor.
    #[arg(long, global = true)]
    secular: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Phonon frequencies on the grid, or along a band path.
    Phonons {
        /// Fractional q-points "q1;q2;..." each "x,y,z".
        #[arg(long, allow_hyphen_values = true)]
        path: Option<String>,
        /// Points per path segment.
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// Smeared phonon density of states with its rigid-body decomposition.
    Dos,
    /// Spin-phonon coupling norms per branch and per frequency bin.
    Couple {
        #[arg(long, default_value_t = 5.0)]
        bin: f64,
    },
    /// Relaxation time at a single parameter point.
    Relax,
    /// Sweeps from the configuration, or one given by --axis and --values.
    Sweep {
        #[arg(long)]
        axis: Option<String>,
        #[arg(long)]
        values: Option<String>,
        /// Run only the configured sweep with this name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Nested grid and breadth convergence.
    Converge {
        #[arg(long, default_value = "1")]
        sigmas: String,
        #[arg(long, default_value = "4,8,16")]
        grids: String,
        #[arg(long, default_value_t = DEFAULT_CONVERGENCE_THRESHOLD)]
        threshold: f64,
    },
    /// Baseline against a perturbed run.
    Perturb {
        /// coupling-x2 or freq-x0.8.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        channel: Option<String>,
    },
    /// Write a synthetic project.
    Toygen {
        /// vanadyl, vanadyl-electron or cubic.
        #[arg(long, default_value = "vanadyl")]
        preset: String,
        #[arg(long, default_value = ".")]
        dir: PathBuf,
    },
    /// Run the worked examples and check them against their expectations.
    RunExamples {
        #[arg(long, default_value = "worked_examples")]
        dir: PathBuf,
        /// Run only this example.
        #[arg(long)]
        id: Option<String>,
        /// Print the observable digests instead of checking them.
        #[arg(long)]
        print_digests: bool,
    },
}

fn parse_axis(s: &str) -> CliResult<SweepAxis> {
    let axis = match s {
        "field" => SweepAxis::FieldMagnitude,
        "temperature" | "temp" => SweepAxis::Temperature,
        "qgrid" => SweepAxis::Qgrid,
        "sigma" => SweepAxis::Sigma,
        "n-spins" => SweepAxis::NSpins,
        "frequency-scale" => SweepAxis::FrequencyScale,
        other => match other.strip_suffix("-scale") {
            Some(ch) => SweepAxis::CouplingScale(
                ch.parse::<Channel>().map_err(|e| CliError::Usage(e.to_string()))?,
            ),
            None => {
                return Err(CliError::Usage(format!(
                    "unknown axis '{other}' (field, temperature, qgrid, sigma, n-spins, frequency-scale, <channel>-scale)"
                )))
            }
        },
    };
    Ok(axis)
}

fn overrides(cli: &Cli) -> CliResult<Overrides> {
    let channels = match &cli.channels {
        Some(s) => {
            let set = spinrelax_core::coupling::ChannelSet::parse(s).map_err(|e| CliError::Usage(e.to_string()))?;
            Some(set.iter().collect())
        }
        None => None,
    };
    Ok(Overrides {
        grid: cli.grid.as_deref().map(commands::parse_grid).transpose()?,
        sigma: cli.sigma,
        temperature: cli.temperature,
        field: cli.field.as_deref().map(commands::parse_vec3).transpose()?,
        channels,
        secular: cli.secular.then_some(true),
        out: cli.out.clone(),
        seed: cli.seed,
    })
}

fn run(cli: Cli) -> CliResult<String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let o = overrides(&cli)?;
    match &cli.command {
        Command::Toygen { preset, dir } => commands::toygen(dir, preset.parse::<ToyPreset>()?, &o),
        Command::RunExamples { dir, id, print_digests } => examples::run_examples(dir, id.as_deref(), *print_digests),
        cmd => {
            // Arguments are checked before the project is loaded so that
            // usage errors win over input errors.
            let open = || Session::open(&cli.config, &o);
            match cmd {
                Command::Phonons { path, points } => commands::phonons(&open()?, path.as_deref(), *points),
                Command::Dos => commands::dos(&open()?),
                Command::Couple { bin } => commands::couple(&open()?, *bin),
                Command::Relax => commands::relax(&open()?),
                Command::Sweep { axis, values, name } => {
                    let adhoc = match (axis, values) {
                        (Some(a), Some(v)) => Some(SweepDoc {
                            name: None,
                            axis: parse_axis(a)?,
                            values: commands::parse_list(v)?,
                            carriers: Vec::new(),
                            replication_axis: 0,
                        }),
                        (None, None) => None,
                        _ => return Err(CliError::Usage("--axis and --values go together".into())),
                    };
                    commands::sweep(&open()?, adhoc, name.as_deref())
                }
                Command::Converge { sigmas, grids, threshold } => {
                    let grids = commands::parse_list(grids)?
                        .into_iter()
                        .map(|g| if g >= 1.0 && g.fract() == 0.0 { Ok(g as usize) } else { Err(CliError::Usage(format!("grid {g} is not a positive integer"))) })
                        .collect::<CliResult<Vec<_>>>()?;
                    let sigmas = commands::parse_list(sigmas)?;
                    commands::convergence(&open()?, &sigmas, &grids, *threshold)
                }
                Command::Perturb { kind, channel } => {
                    let kind = commands::parse_perturbation(kind, channel.as_deref())?;
                    commands::perturb(&open()?, kind)
                }
                Command::Toygen { .. } | Command::RunExamples { .. } => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE as u8) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
