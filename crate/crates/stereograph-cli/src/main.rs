//! Command-line front end: `train`, `evaluate`, `curvature`, `synth`.
//!
//! Configuration layering: built-in defaults, then an optional `--config`
//! TOML file, then explicit flags. Exit codes: 0 success, 1 usage, 2 data,
//! 3 runtime.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stereograph::checkpoint::Checkpoint;
use stereograph::config::{CurvatureMode, EncoderOpt, FusionOpt, RunConfig};
use stereograph::contrast::{self, IntervalRecord};
use stereograph::curvature::{CurvatureCacheEntry, Side};
use stereograph::data;
use stereograph::eval;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "stereograph", version, about = "Sequential interaction network learning on co-evolving constant-curvature spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus a training log.
    Train(ConfigArgs),
    /// Rank held-out interactions with a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Compute per-interval Ricci vectors and observed curvatures.
    Curvature(ConfigArgs),
    /// Generate a planted-cluster synthetic event log.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Early,
    Late,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Cosine,
    Fourier,
}

#[derive(Clone, Copy, ValueEnum)]
enum CurvatureArg {
    Evolve,
    Static,
    Zero,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Event-log path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Number of training intervals.
    #[arg(long)]
    intervals: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Hard-sample reweighing strength.
    #[arg(long)]
    eta: Option<f64>,
    /// Item-contrast weight in the overall loss.
    #[arg(long)]
    w1: Option<f64>,
    /// Curvature-loss weight in the overall loss.
    #[arg(long)]
    w2: Option<f64>,
    /// Lazy-walk mass kept at the center node.
    #[arg(long)]
    alpha: Option<f64>,
    /// Shared-counterpart threshold for co-occurrence links.
    #[arg(long)]
    k: Option<usize>,
    /// Entity sampling ratio for curvature subgraphs.
    #[arg(long = "sample-ratio")]
    sample_ratio: Option<f64>,
    /// Stacked aggregation layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Interaction fusion order.
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    /// Time-encoder mode.
    #[arg(long, value_enum)]
    encoder: Option<EncoderArg>,
    /// Curvature behavior over time.
    #[arg(long, value_enum)]
    curvature: Option<CurvatureArg>,
    /// Disable hard-sample reweighing (eta = 0).
    #[arg(long)]
    no_reweigh: bool,
    /// Drop counterpart-space positives from the contrast.
    #[arg(long)]
    no_cocon: bool,
    /// Replace the learned time kernel with exponential decay.
    #[arg(long)]
    no_kernel: bool,
    /// Negative samples per anchor.
    #[arg(long)]
    negatives: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $STEREOGRAPH_OUT, then `.`).
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::data(format!("cannot read config {}: {e}", path.display()))
                })?;
                RunConfig::from_toml(&text).map_err(|e| CliError::usage(e.to_string()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone(); })*
            };
        }
        overlay!(dim, intervals, lr, epochs, eta, w1, w2, alpha, k, sample_ratio, layers, negatives, seed);
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(f) = self.fusion {
            cfg.fusion = match f {
                FusionArg::Early => FusionOpt::Early,
                FusionArg::Late => FusionOpt::Late,
            };
        }
        if let Some(e) = self.encoder {
            cfg.encoder = match e {
                EncoderArg::Cosine => EncoderOpt::Cosine,
                EncoderArg::Fourier => EncoderOpt::Fourier,
            };
        }
        if let Some(c) = self.curvature {
            cfg.curvature = match c {
                CurvatureArg::Evolve => CurvatureMode::Evolve,
                CurvatureArg::Static => CurvatureMode::Static,
                CurvatureArg::Zero => CurvatureMode::Zero,
            };
        }
        cfg.no_reweigh |= self.no_reweigh;
        cfg.no_cocon |= self.no_cocon;
        cfg.no_kernel |= self.no_kernel;
        if let Some(o) = &self.out_dir {
            cfg.out_dir = Some(o.clone());
        }
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }

    fn load_dataset(&self, cfg: &RunConfig) -> Result<data::Dataset, CliError> {
        let path = cfg
            .data
            .as_ref()
            .ok_or_else(|| CliError::usage("no data file given (use --data)".into()))?;
        if !path.exists() {
            return Err(CliError::data(format!("data file not found: {}", path.display())));
        }
        data::parse(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// TOML config file (for the data path and output directory).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Event-log path.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Embedding dimension; must match the checkpoint when given.
    #[arg(long)]
    dim: Option<usize>,
    /// Output directory (default: $STEREOGRAPH_OUT, then `.`).
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Trained checkpoint path.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Recall cutoffs, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    k: Vec<usize>,
    /// Also dump per-event ranks.
    #[arg(long)]
    dump_ranks: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    users: usize,
    #[arg(long, default_value_t = 50)]
    items: usize,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 5000)]
    events: usize,
    /// Probability of an out-of-cluster interaction.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file path.
    #[arg(long, default_value = "synth.csv")]
    out: PathBuf,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: String) -> Self {
        Self { code: EXIT_USAGE, message }
    }
    fn data(message: String) -> Self {
        Self { code: EXIT_DATA, message }
    }
    fn runtime(message: String) -> Self {
        Self { code: EXIT_RUNTIME, message }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Curvature(args) => cmd_curvature(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn train_error(e: contrast::TrainError) -> CliError {
    match e {
        contrast::TrainError::Data(d) => CliError::data(d.to_string()),
        other => CliError::runtime(other.to_string()),
    }
}

fn cmd_train(args: ConfigArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let ds = args.load_dataset(&cfg)?;
    let (train_ds, _valid, _test) =
        data::chrono_split(&ds, (0.8, 0.1, 0.1)).map_err(|e| CliError::data(e.to_string()))?;
    let outcome = contrast::train(&train_ds, &cfg).map_err(train_error)?;

    let out_dir = cfg.resolved_out_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::runtime(e.to_string()))?;
    let ckpt_path = out_dir.join("checkpoint.bin");
    outcome
        .checkpoint
        .save(&ckpt_path)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let log_path = out_dir.join("training_log.csv");
    let mut log_text = String::from(IntervalRecord::CSV_HEADER);
    log_text.push('\n');
    for rec in &outcome.log {
        log_text.push_str(&rec.to_csv());
        log_text.push('\n');
    }
    std::fs::write(&log_path, log_text).map_err(|e| CliError::runtime(e.to_string()))?;

    if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
        println!(
            "trained {} epochs x {} intervals: loss {:.6} -> {:.6}",
            cfg.epochs, cfg.intervals, first.loss_total, last.loss_total
        );
    } else {
        println!("trained 0 epochs: checkpoint equals initialization");
    }
    println!("checkpoint: {}", ckpt_path.display());
    println!("log: {}", log_path.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::data(format!("cannot read config {}: {e}", path.display()))
            })?;
            RunConfig::from_toml(&text).map_err(|e| CliError::usage(e.to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &args.out_dir {
        cfg.out_dir = Some(o.clone());
    }
    if !args.checkpoint.exists() {
        return Err(CliError::data(format!(
            "checkpoint not found: {}",
            args.checkpoint.display()
        )));
    }
    let ckpt = Checkpoint::load(&args.checkpoint).map_err(|e| CliError::data(e.to_string()))?;
    if let Some(dim) = args.dim {
        if dim != ckpt.config.dim {
            return Err(CliError::data(format!(
                "requested dim {dim} but the checkpoint was trained with dim {}",
                ckpt.config.dim
            )));
        }
    }
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::usage("no data file given (use --data)".into()))?;
    if !path.exists() {
        return Err(CliError::data(format!("data file not found: {}", path.display())));
    }
    let ds = data::parse(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    if ds.n_users > ckpt.n_users || ds.n_items > ckpt.n_items {
        return Err(CliError::data(format!(
            "dataset has {}x{} entities, checkpoint covers {}x{}",
            ds.n_users, ds.n_items, ckpt.n_users, ckpt.n_items
        )));
    }
    let (_train, valid, test) =
        data::chrono_split(&ds, (0.8, 0.1, 0.1)).map_err(|e| CliError::data(e.to_string()))?;
    let report = eval::evaluate(&ckpt, &valid.events, &test.events, &args.k)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    println!("events scored: {} (skipped {})", report.ranks.len(), report.skipped);
    println!("MRR: {:.6}", report.mrr);
    let header: Vec<String> = report.recalls.iter().map(|(k, _)| format!("recall@{k}")).collect();
    let values: Vec<String> = report.recalls.iter().map(|(_, v)| format!("{v:.6}")).collect();
    println!("{}", header.join("\t"));
    println!("{}", values.join("\t"));

    let out_dir = cfg.resolved_out_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::runtime(e.to_string()))?;
    let report_path = out_dir.join("report.csv");
    std::fs::write(&report_path, report.summary_csv())
        .map_err(|e| CliError::runtime(e.to_string()))?;
    println!("report: {}", report_path.display());
    if args.dump_ranks {
        let ranks_path = out_dir.join("ranks.csv");
        std::fs::write(&ranks_path, report.ranks_csv())
            .map_err(|e| CliError::runtime(e.to_string()))?;
        println!("ranks: {}", ranks_path.display());
    }
    Ok(())
}

fn cmd_curvature(args: ConfigArgs) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let ds = args.load_dataset(&cfg)?;
    let intervals =
        data::interval_partition(&ds, cfg.intervals).map_err(|e| CliError::data(e.to_string()))?;
    let cache = contrast::curvature_prepass(&ds, &intervals, &cfg).map_err(train_error)?;

    let out_dir = cfg.resolved_out_dir();
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::runtime(e.to_string()))?;
    println!("interval\tside\tedges\tkappa_o");
    for (idx, obs) in cache.iter().enumerate() {
        let entries = [
            CurvatureCacheEntry {
                side: Side::User,
                interval: idx as u32,
                kappa_o: obs.kappa_o_user,
                ricci: obs.ricci_user.values.clone(),
            },
            CurvatureCacheEntry {
                side: Side::Item,
                interval: idx as u32,
                kappa_o: obs.kappa_o_item,
                ricci: obs.ricci_item.values.clone(),
            },
        ];
        for e in entries {
            println!("{}\t{}\t{}\t{:.6}", e.interval, e.side.name(), e.ricci.len(), e.kappa_o);
            std::fs::write(out_dir.join(e.file_name()), e.to_text())
                .map_err(|err| CliError::runtime(err.to_string()))?;
        }
    }
    println!("wrote {} cache files to {}", 2 * cache.len(), out_dir.display());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let ds = data::synth_generate(
        args.users,
        args.items,
        args.clusters,
        args.events,
        args.noise,
        args.seed,
    )
    .map_err(|e| CliError::usage(e.to_string()))?;
    data::write(&ds, &args.out).map_err(|e| CliError::runtime(e.to_string()))?;
    println!(
        "wrote {} events ({} users, {} items) to {}",
        ds.events.len(),
        ds.n_users,
        ds.n_items,
        args.out.display()
    );
    Ok(())
}
