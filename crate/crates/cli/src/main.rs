use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cbm::bench::harness::{threads_from_env, EncoderParams, LearnerParams};
use cbm::bench::scaling::parse_sizes;
use cbm::bench::{
    run_benchmark, run_scaling, BenchmarkConfig, Cardinality, EncoderChoice, LearnerChoice,
    ScalingConfig, SyntheticSpec,
};
use cbm::data::{read_csv, write_matrix_csv, IngestOptions, ScalerParams, TaskHint};
use cbm::{CbmEncoder, CbmError};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "cbm",
    version,
    about = "Conjugate Bayesian model encoding of categorical features"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an encoder on a labelled CSV and write the model file.
    Fit(FitArgs),
    /// Encode a CSV with a fitted model.
    Transform(TransformArgs),
    /// Compare encoders under k-fold cross-validation.
    Benchmark(BenchmarkArgs),
    /// Training time and accuracy against sample size on synthetic data.
    Scaling(ScalingArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Infer,
    Binary,
    Multiclass,
    Regression,
}

impl From<TaskArg> for TaskHint {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Infer => TaskHint::Infer,
            TaskArg::Binary => TaskHint::Binary,
            TaskArg::Multiclass => TaskHint::Multiclass,
            TaskArg::Regression => TaskHint::Regression,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Field delimiter (single byte).
    #[arg(long, default_value = ",", value_parser = parse_delimiter)]
    delimiter: u8,
    /// Cell values treated as missing; repeat the flag for several tokens.
    #[arg(long = "na")]
    na_tokens: Vec<String>,
    /// Read these columns as categorical even if they look numeric.
    #[arg(long = "categorical", value_delimiter = ',')]
    categorical: Vec<String>,
}

impl InputArgs {
    fn options(&self, target: Option<&str>, task: TaskHint) -> IngestOptions {
        let mut opts = IngestOptions {
            target_column: target.map(str::to_owned),
            task,
            delimiter: self.delimiter,
            categorical_columns: self.categorical.clone(),
            ..IngestOptions::default()
        };
        if !self.na_tokens.is_empty() {
            opts.na_tokens = self.na_tokens.clone();
        }
        opts
    }
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV with a header row.
    input: PathBuf,
    #[arg(long, default_value = "target")]
    target: String,
    #[arg(long, value_enum, default_value = "infer")]
    task: TaskArg,
    /// Number of posterior moments per level.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    q: u8,
    /// Standard deviation of the Gaussian noise added to encoded training cells.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the encoded training matrix (with training noise) here.
    #[arg(long)]
    encoded: Option<PathBuf>,
    #[command(flatten)]
    input_args: InputArgs,
}

#[derive(Args)]
struct TransformArgs {
    /// Model file written by `cbm fit`.
    model: PathBuf,
    /// CSV to encode; columns the model does not know are ignored.
    input: PathBuf,
    /// Encoded CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    input_args: InputArgs,
}

#[derive(Args)]
struct BenchmarkArgs {
    input: PathBuf,
    #[arg(long, default_value = "target")]
    target: String,
    #[arg(long, value_enum, default_value = "infer")]
    task: TaskArg,
    /// Comma-separated: cbm, beta, dirichlet, nig, onehot, ordinal, binary, hashing, target.
    #[arg(long, default_value = "cbm")]
    encoders: String,
    /// auto, logistic, multinomial or ridge.
    #[arg(long, default_value = "auto")]
    learner: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    q: u8,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Minimum level count for a dedicated one-hot column.
    #[arg(long, default_value_t = 150)]
    onehot_threshold: usize,
    #[arg(long, default_value_t = 1000)]
    hash_dims: usize,
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    /// Plain (unstratified) folds for classification targets.
    #[arg(long)]
    no_stratify: bool,
    #[arg(long, default_value_t = LearnerParams::default().l2)]
    l2: f64,
    #[arg(long, default_value_t = LearnerParams::default().max_iter)]
    max_iter: usize,
    /// JSON report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    input_args: InputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecArg {
    Synthetic,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_enum, default_value = "synthetic")]
    spec: SpecArg,
    /// `start:end:step` or a comma-separated list.
    #[arg(long, default_value = "2000:50000:2000")]
    sizes: String,
    #[arg(long, default_value = "beta,onehot")]
    encoders: String,
    /// Levels per row: cardinality is N / divisor.
    #[arg(long, default_value_t = 10)]
    divisor: usize,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    onehot_threshold: usize,
    #[arg(long, default_value_t = ScalingConfig::default().learner_params.max_iter)]
    max_iter: usize,
    /// Curves CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s.as_bytes() {
        [b] => Ok(*b),
        _ if s == "\\t" => Ok(b'\t'),
        _ => Err(format!("delimiter must be a single byte, got '{s}'")),
    }
}

enum Failure {
    Usage(String),
    Data(CbmError),
    Internal(String),
}

impl From<CbmError> for Failure {
    fn from(e: CbmError) -> Self {
        match &e {
            CbmError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => {
                Failure::Data(e)
            }
            CbmError::InvalidParameter(msg) => Failure::Usage(msg.clone()),
            _ if e.is_data_error() => Failure::Data(e),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Internal(format!("{}: {e}", path.display()))
}

/// Runs `write` against the file at `path`, or stdout without a path.
fn with_output(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> Result<(), Failure>,
) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| io_failure(p, e))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush().map_err(|e| io_failure(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush().map_err(|e| Failure::Internal(e.to_string()))
        }
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let opts = args
        .input_args
        .options(Some(&args.target), args.task.into());
    let data = read_csv(&args.input, &opts)?;
    let task = data.require_target()?.task();
    let scaler = ScalerParams::fit(&data);
    let scaled = scaler.transform(&data)?;
    let (mut encoder, z) =
        CbmEncoder::fit_transform(&scaled, task, args.q as usize, args.noise_sigma, args.seed)?;
    encoder.set_scaler(Some(scaler));
    encoder.save(&args.out)?;
    if let Some(path) = &args.encoded {
        with_output(Some(path), |w| Ok(write_matrix_csv(&z, w)?))?;
    }
    println!("task: {task}");
    for column in encoder.columns() {
        println!(
            "column {}: cardinality {}",
            column.column_name(),
            column.cardinality()
        );
    }
    println!("numeric columns: {}", encoder.numeric_columns().len());
    println!("encoded width: {}", encoder.width());
    Ok(())
}

fn cmd_transform(args: TransformArgs) -> Result<(), Failure> {
    let encoder = CbmEncoder::load(&args.model)?;
    let mut opts = args.input_args.options(None, TaskHint::Infer);
    opts.categorical_columns
        .extend(encoder.columns().iter().map(|c| c.column_name().to_owned()));
    let data = read_csv(&args.input, &opts)?;
    let z = encoder.transform(&data)?;
    with_output(args.out.as_deref(), |w| Ok(write_matrix_csv(&z, w)?))
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), Failure> {
    let encoders = EncoderChoice::parse_list(&args.encoders)?;
    let learner: LearnerChoice = args.learner.parse()?;
    if args.k < 2 {
        return Err(Failure::Usage(format!(
            "--k must be at least 2, got {}",
            args.k
        )));
    }
    let opts = args
        .input_args
        .options(Some(&args.target), args.task.into());
    let data = read_csv(&args.input, &opts)?;
    let config = BenchmarkConfig {
        encoders,
        learner,
        k: args.k,
        seed: args.seed,
        stratify: !args.no_stratify,
        threads: threads_from_env(),
        encoder_params: EncoderParams {
            q: args.q as usize,
            noise_sigma: args.noise_sigma,
            onehot_threshold: args.onehot_threshold,
            hash_dimensions: args.hash_dims,
            target_smoothing: args.smoothing,
            ..EncoderParams::default()
        },
        learner_params: LearnerParams {
            l2: args.l2,
            max_iter: args.max_iter,
            ..LearnerParams::default()
        },
    };
    let report = run_benchmark(&data, &config)?;
    with_output(args.out.as_deref(), |w| {
        writeln!(w, "{}", report.to_json()).map_err(|e| Failure::Internal(e.to_string()))
    })?;
    if args.out.is_some() {
        for cell in &report.cells {
            let metrics: Vec<String> = cell
                .metrics
                .iter()
                .map(|(name, s)| format!("{name} {:.4} ± {:.4}", s.mean, s.stddev))
                .collect();
            println!(
                "{:<10} {:<12} width {:>6}  {}  time {:.3}s",
                cell.encoder,
                cell.learner,
                cell.encoded_width,
                metrics.join("  "),
                cell.training_time.mean
            );
        }
    }
    Ok(())
}

fn cmd_scaling(args: ScalingArgs) -> Result<(), Failure> {
    let SpecArg::Synthetic = args.spec;
    if args.divisor == 0 {
        return Err(Failure::Usage("--divisor must be positive".into()));
    }
    let defaults = ScalingConfig::default();
    let config = ScalingConfig {
        spec: SyntheticSpec {
            cardinality: Cardinality::Proportional {
                divisor: args.divisor,
            },
            seed: args.seed,
            ..defaults.spec.clone()
        },
        sizes: parse_sizes(&args.sizes)?,
        encoders: EncoderChoice::parse_list(&args.encoders)?,
        test_fraction: args.test_fraction,
        seed: args.seed,
        encoder_params: EncoderParams {
            onehot_threshold: args.onehot_threshold,
            ..defaults.encoder_params
        },
        learner_params: LearnerParams {
            max_iter: args.max_iter,
            ..defaults.learner_params
        },
        threads: threads_from_env(),
        ..defaults
    };
    let curves = run_scaling(&config)?;
    with_output(args.out.as_deref(), |w| Ok(curves.write_csv(w)?))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Transform(a) => cmd_transform(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Scaling(a) => cmd_scaling(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
