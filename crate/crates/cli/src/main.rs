mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use addlogit::harness::{
    emit_report, load_csv_ignoring, run_resampling, run_simulation, ExperimentConfig,
    ExperimentReport, Method, Mode,
};
use addlogit::simgen::{GeneratorSpec, VariableSet};
use clap::{Args, Parser, Subcommand};

use settings::{read_settings, FileSettings};

#[derive(Parser, Debug)]
#[command(
    name = "addlogit",
    version,
    about = "Additive vs linear logistic regression benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Repeated train/test draws from a synthetic additive model.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Effect set (1 or 2).
        #[arg(long)]
        set: Option<u8>,
        /// Number of features (at least 5).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        train_n: Option<usize>,
        #[arg(long)]
        test_n: Option<usize>,
    },
    /// Repeated stratified splits of a CSV dataset.
    Resample {
        #[command(flatten)]
        common: Common,
        /// Input CSV (header row, comma-separated).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        train_frac: Option<f64>,
        #[arg(long)]
        label_column: Option<String>,
        /// Label value mapped to class 1.
        #[arg(long)]
        positive_label: Option<String>,
        /// Non-feature columns to skip, comma-separated.
        #[arg(long, value_delimiter = ',')]
        ignore_columns: Option<Vec<String>>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Flat TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods or `all`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Multiplier on effective df in AIC-based selection.
    #[arg(long)]
    df_scale: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run replications one at a time.
    #[arg(long)]
    sequential: bool,
}

struct Run {
    config: ExperimentConfig,
    file: FileSettings,
}

fn base_config(common: &Common, mode: Mode) -> Result<Run, String> {
    let file = match &common.config {
        Some(path) => read_settings(path)?,
        None => FileSettings::default(),
    };
    let mut config = ExperimentConfig {
        mode,
        ..Default::default()
    };
    let methods = common
        .methods
        .clone()
        .or_else(|| file.methods.as_ref().map(|m| m.joined()));
    if let Some(m) = methods {
        config.methods = Method::parse_list(&m).map_err(|e| e.to_string())?;
    }
    config.reps = common.reps.or(file.reps).unwrap_or(config.reps);
    config.seed = common.seed.or(file.seed).unwrap_or(config.seed);
    config.df_scale = common.df_scale.or(file.df_scale).unwrap_or(config.df_scale);
    config.output_dir = common
        .out
        .clone()
        .or(file.out.clone())
        .unwrap_or(config.output_dir);
    config.parallel = !(common.sequential || file.sequential.unwrap_or(false));
    Ok(Run { config, file })
}

fn execute(command: Command) -> Result<ExperimentReport, String> {
    let (report, config) = match command {
        Command::Simulate {
            common,
            set,
            dim,
            train_n,
            test_n,
        } => {
            let Run { mut config, file } = base_config(&common, Mode::Simulate)?;
            config.train_n = train_n.or(file.train_n).unwrap_or(config.train_n);
            config.test_n = test_n.or(file.test_n).unwrap_or(config.test_n);
            let set = VariableSet::from_number(set.or(file.set).unwrap_or(1))
                .map_err(|e| e.to_string())?;
            let dim = dim.or(file.dim).unwrap_or(5);
            let spec = GeneratorSpec::new(set, dim, config.train_n, config.seed);
            (run_simulation(&config, &spec), config)
        }
        Command::Resample {
            common,
            data,
            train_frac,
            label_column,
            positive_label,
            ignore_columns,
        } => {
            let Run { mut config, file } = base_config(&common, Mode::Resample)?;
            config.train_frac = train_frac.or(file.train_frac).unwrap_or(config.train_frac);
            let path = data.or(file.data).ok_or("resample needs --data")?;
            let label = label_column
                .or(file.label_column)
                .unwrap_or_else(|| "label".into());
            let positive = positive_label
                .or(file.positive_label)
                .unwrap_or_else(|| "1".into());
            let ignore = ignore_columns.or(file.ignore_columns).unwrap_or_default();
            let dataset =
                load_csv_ignoring(&path, &label, &positive, &ignore).map_err(|e| e.to_string())?;
            log::info!(
                "loaded {} rows, {} features, {} positive",
                dataset.n(),
                dataset.dim(),
                dataset.positives()
            );
            (run_resampling(&config, &dataset), config)
        }
    };
    let report = report.map_err(|e| e.to_string())?;
    emit_report(&report, &config.output_dir).map_err(|e| e.to_string())?;
    println!("wrote {}", config.output_dir.display());
    Ok(report)
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<13} {:>5} {:>7} {:>6} {:>8} {:>8} {:>8} {:>10}",
        "method", "ok", "flagged", "failed", "auc", "sd", "median", "sec/fit"
    );
    for s in &report.summaries {
        println!(
            "{:<13} {:>5} {:>7} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>10.4}",
            s.method.name(),
            s.n_ok,
            s.n_flagged,
            s.n_failed,
            s.auc_mean,
            s.auc_sd,
            s.auc_quantiles[2],
            s.fit_seconds_mean
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(report) => {
            print_summary(&report);
            ExitCode::SUCCESS
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
