use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedgbdt_cli::{
    cmd_analyze, cmd_benchmark, cmd_partition, cmd_predict, cmd_train, parse_cipher, AnalyzeArgs,
    BenchmarkArgs, CliError, ConfigFile, Method, Metric, PartitionArgs, PredictArgs, Resolved,
    TrainArgs,
};
use fedgbdt_core::partition::PartitionScheme;
use fedgbdt_fed::GuestSplitMode;

#[derive(Parser)]
#[command(
    name = "fedgbdt",
    about = "Federated gradient-boosted trees on hybrid data: one labeled host, many feature-holding guests",
    version
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed for partitioning, key generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reserved: the in-process simulation already runs one thread per party.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for generated files.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Cipher for federated training: passthrough, paillier or paillier:BITS.
    #[arg(long, global = true)]
    cipher: Option<String>,
    /// Evaluation metric.
    #[arg(long, global = true, value_enum)]
    metric: Option<Metric>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, clap::ValueEnum)]
enum SchemeArg {
    RandomHybrid,
    Dirichlet,
    OverlapHetero,
}

#[derive(Subcommand)]
enum Command {
    /// Split a dataset into host and guest shards plus a manifest.
    Partition {
        /// Input dataset (CSV with header, or libsvm).
        input: PathBuf,
        #[arg(long, value_enum, default_value = "random-hybrid")]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 5)]
        guests: usize,
        /// Dirichlet concentration for the heterogeneity scheme.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        id_column: Option<String>,
    },
    /// Train a model with any method and optionally evaluate it.
    Train {
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Full dataset (required for allin without a manifest).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Partition manifest produced by `partition`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        e_host: Option<usize>,
        #[arg(long)]
        e_guest: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        max_bins: Option<usize>,
        /// Guest split selection: assisted (gain queries) or surrogate.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        loss: Option<String>,
        /// Host shard count for the multihost method.
        #[arg(long)]
        hosts: Option<usize>,
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        id_column: Option<String>,
    },
    /// Score a test set with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        id_column: Option<String>,
    },
    /// Extract split rules, rank them by cross-tree prevalence and test the
    /// distribution-invariance property.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 30)]
        min_support: usize,
        #[arg(long, default_value_t = 20)]
        top: usize,
        /// Also reorder guest splits to the bottom layer and report gaps.
        #[arg(long)]
        transform: bool,
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        id_column: Option<String>,
    },
    /// Run a method comparison over one partition, optionally sweeping the
    /// guest count.
    Benchmark {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        train: Option<PathBuf>,
        /// Comma-separated method list.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Comma-separated guest counts for a scalability sweep.
        #[arg(long, value_delimiter = ',')]
        guests: Option<Vec<usize>>,
        #[arg(long)]
        label_column: Option<String>,
        #[arg(long)]
        id_column: Option<String>,
    },
}

fn resolve(cli: &Cli) -> Result<Resolved, CliError> {
    let mut resolved = Resolved::default();
    if let Some(path) = &cli.config {
        let file = ConfigFile::load(path)?;
        resolved.apply_file(&file)?;
    }
    if let Some(seed) = cli.seed {
        resolved.seed = seed;
    }
    if let Some(cipher) = &cli.cipher {
        resolved.cipher = parse_cipher(cipher)?;
    }
    if let Some(metric) = cli.metric {
        resolved.metric = metric;
    }
    Ok(resolved)
}

fn parse_mode(s: &str) -> Result<GuestSplitMode, CliError> {
    match s {
        "assisted" => Ok(GuestSplitMode::Assisted),
        "surrogate" => Ok(GuestSplitMode::Surrogate),
        other => Err(CliError::Config(format!("unknown mode '{other}'"))),
    }
}

fn parse_loss(s: &str) -> Result<fedgbdt_core::train::LossKind, CliError> {
    match s {
        "logistic" => Ok(fedgbdt_core::train::LossKind::Logistic),
        "squared_error" => Ok(fedgbdt_core::train::LossKind::SquaredError),
        other => Err(CliError::Config(format!("unknown loss '{other}'"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut resolved = resolve(&cli)?;
    match cli.command {
        Command::Partition { input, scheme, guests, beta, label_column, id_column } => {
            let scheme = match scheme {
                SchemeArg::RandomHybrid => PartitionScheme::RandomHybrid,
                SchemeArg::Dirichlet => PartitionScheme::Dirichlet,
                SchemeArg::OverlapHetero => PartitionScheme::OverlapHetero,
            };
            let args = PartitionArgs {
                input,
                scheme,
                guests,
                beta,
                seed: resolved.seed,
                output_dir: cli.output_dir.unwrap_or_else(|| PathBuf::from(".")),
                label_column: label_column.unwrap_or(resolved.label_column),
                id_column: id_column.or(resolved.id_column),
            };
            let manifest = cmd_partition(&args)?;
            println!("wrote {}", manifest.display());
            Ok(())
        }
        Command::Train {
            method,
            train,
            manifest,
            test,
            model,
            metrics,
            trees,
            depth,
            e_host,
            e_guest,
            lambda,
            learning_rate,
            max_bins,
            mode,
            loss,
            hosts,
            label_column,
            id_column,
        } => {
            if let Some(v) = method {
                resolved.method = v;
            }
            if let Some(v) = trees {
                resolved.trees = v;
            }
            if let Some(v) = depth {
                resolved.depth = v;
            }
            if let Some(v) = e_host {
                resolved.e_host = v;
            }
            if let Some(v) = e_guest {
                resolved.e_guest = v;
            }
            if let Some(v) = lambda {
                resolved.lambda = v;
            }
            if let Some(v) = learning_rate {
                resolved.learning_rate = v;
            }
            if let Some(v) = max_bins {
                resolved.max_bins = v;
            }
            if let Some(v) = &mode {
                resolved.mode = parse_mode(v)?;
            }
            if let Some(v) = &loss {
                resolved.loss = parse_loss(v)?;
            }
            if let Some(v) = hosts {
                resolved.hosts = v;
            }
            if let Some(v) = label_column {
                resolved.label_column = v;
            }
            if let Some(v) = id_column {
                resolved.id_column = Some(v);
            }
            let args = TrainArgs {
                config: resolved,
                train,
                manifest,
                test,
                model_out: model,
                metrics_out: metrics,
            };
            let summary = cmd_train(&args)?;
            match summary.metric_value {
                Some(v) => println!(
                    "method={} {}={v:.4} train_seconds={:.2}",
                    summary.method, summary.record.metric, summary.record.train_seconds
                ),
                None => println!(
                    "method={} trained in {:.2}s",
                    summary.method, summary.record.train_seconds
                ),
            }
            Ok(())
        }
        Command::Predict { model, test, manifest, output, label_column, id_column } => {
            let args = PredictArgs {
                model,
                test,
                manifest,
                output,
                metric: cli.metric,
                label_column: label_column.unwrap_or(resolved.label_column),
                id_column: id_column.or(resolved.id_column),
            };
            if let Some(value) = cmd_predict(&args)? {
                println!("{}={value:.4}", args.metric.unwrap());
            }
            Ok(())
        }
        Command::Analyze {
            model,
            data,
            manifest,
            output,
            epsilon,
            min_support,
            top,
            transform,
            label_column,
            id_column,
        } => {
            let args = AnalyzeArgs {
                model,
                data,
                manifest,
                output,
                epsilon,
                min_support,
                top,
                transform,
                label_column: label_column.unwrap_or(resolved.label_column),
                id_column: id_column.or(resolved.id_column),
            };
            let doc = cmd_analyze(&args)?;
            let rules = doc["rules"].as_array().map(Vec::len).unwrap_or(0);
            println!("analyzed {} trees, reported {rules} rules", doc["trees_analyzed"]);
            if let Some(best) = doc["rules"].as_array().and_then(|r| r.first()) {
                println!(
                    "top rule: prevalence={:.3} outcome={}",
                    best["prevalence"].as_f64().unwrap_or(0.0),
                    best["outcome"].as_str().unwrap_or("?")
                );
            }
            Ok(())
        }
        Command::Benchmark { manifest, test, train, methods, guests, label_column, id_column } => {
            if let Some(v) = label_column {
                resolved.label_column = v;
            }
            if let Some(v) = id_column {
                resolved.id_column = Some(v);
            }
            let args = BenchmarkArgs {
                manifest,
                test,
                output_dir: cli.output_dir.unwrap_or_else(|| PathBuf::from("bench-out")),
                config: resolved,
                methods: methods.unwrap_or_else(|| {
                    vec![Method::Allin, Method::Solo, Method::Hybridtree, Method::Tfl]
                }),
                train,
                guest_sweep: guests.unwrap_or_default(),
            };
            let doc = cmd_benchmark(&args)?;
            println!(
                "{}",
                std::fs::read_to_string(args.output_dir.join("benchmark.txt"))
                    .unwrap_or_else(|_| format!("{doc}"))
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
