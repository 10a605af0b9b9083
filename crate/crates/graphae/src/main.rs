use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use graphae::dataset::DataFormat;
use graphae::runner::{
    cmd_benchmark, cmd_encode, cmd_encode_from_manifest, cmd_graph, cmd_metrics, cmd_train,
    load_config,
};

/// Graph-regularized auto-encoders: training, graph construction, and
/// clustering evaluation driven by JSON configs.
#[derive(Parser)]
#[command(name = "graphae", version, about)]
struct Cli {
    /// Threads for independent repeats and grid cells (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file (or a manifest of a previous run)
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Encode a dataset through a saved model into a CSV of representations
    Encode {
        /// Rerun from an encode manifest instead of the path flags
        #[arg(long, conflicts_with_all = ["model", "data", "out"])]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        model: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        data: Option<PathBuf>,
        /// Input layout: csv, csv-labeled, image-folder, or idx
        #[arg(long, default_value = "csv")]
        format: String,
        /// Companion idx label file (idx format only)
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        out: Option<PathBuf>,
    },
    /// Compare methods under the randomized class-subset protocol
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build an affinity graph, export its edge list, report the error rate
    Graph {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Clustering accuracy and NMI between two label files
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        predicted: PathBuf,
    },
}

fn parse_format(name: &str, labels: Option<PathBuf>) -> graphae::Result<DataFormat> {
    match name {
        "csv" => Ok(DataFormat::Csv { labeled: false }),
        "csv-labeled" => Ok(DataFormat::Csv { labeled: true }),
        "image-folder" => Ok(DataFormat::ImageFolder),
        "idx" => Ok(DataFormat::Idx { labels }),
        other => Err(graphae::Error::Config(format!(
            "unknown format {other:?}; expected csv, csv-labeled, image-folder, or idx"
        ))),
    }
}

fn run(cli: Cli) -> graphae::Result<()> {
    match cli.command {
        Command::Train { config, seed, output } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(output) = output {
                config.output_dir = output;
            }
            let out = cmd_train(&config)?;
            println!("model: {}", out.model_path.display());
            for (i, (path, obj)) in out.log_paths.iter().zip(&out.final_objectives).enumerate() {
                println!("layer {}: final objective {obj} (log: {})", i + 1, path.display());
            }
            println!("manifest: {}", out.manifest_path.display());
        }
        Command::Encode {
            config,
            model,
            data,
            format,
            labels,
            out,
        } => {
            let manifest = match config {
                Some(manifest) => cmd_encode_from_manifest(&manifest)?,
                None => {
                    let format = parse_format(&format, labels)?;
                    cmd_encode(
                        &model.expect("required by clap"),
                        &data.expect("required by clap"),
                        &format,
                        &out.expect("required by clap"),
                    )?
                }
            };
            println!("manifest: {}", manifest.display());
        }
        Command::Benchmark { config, seed, output } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(output) = output {
                config.output_dir = output;
            }
            let out = cmd_benchmark(&config)?;
            print!("{}", std::fs::read_to_string(&out.csv_path).unwrap_or_default());
            println!("csv: {}", out.csv_path.display());
            println!("json: {}", out.json_path.display());
            println!("manifest: {}", out.manifest_path.display());
        }
        Command::Graph { config, seed, output } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(output) = output {
                config.output_dir = output;
            }
            let out = cmd_graph(&config)?;
            println!("edges: {} ({} connections)", out.edges_path.display(), out.edge_count);
            match out.error_rate {
                Some(rate) => println!("error_rate: {rate}"),
                None => println!("error_rate: unavailable (dataset not fully labeled)"),
            }
            println!("manifest: {}", out.manifest_path.display());
        }
        Command::Metrics { truth, predicted } => {
            let (ac, mi) = cmd_metrics(&truth, &predicted)?;
            println!("AC {ac}");
            println!("MI {mi}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("graphae: could not configure {jobs} jobs: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("graphae: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
