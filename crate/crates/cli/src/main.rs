use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridwise_cli::{
    cmd_classify, cmd_detect, cmd_eval, cmd_forecast, cmd_ingest, cmd_train, exit_code, load_config,
    CommonArgs, ModelKind,
};

#[derive(Parser)]
#[command(name = "gridwise", version, about = "Household load forecasting and anomaly screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed (overrides seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override one config key, e.g. `--set lstm.epochs=5`
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Lstm,
    Svr,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Lstm => ModelKind::Lstm,
            Model::Svr => ModelKind::Svr,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse the raw dataset and write a cleaned, resampled series
    Ingest {
        /// Raw semicolon-separated file (defaults to data.path)
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write its model file, metrics and test forecast
    Train {
        #[arg(long, value_enum)]
        model: Model,
        /// Series CSV (defaults to <out>/series.csv)
        #[arg(long)]
        series: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Apply a saved model to a series
    Forecast {
        #[arg(long, value_enum)]
        model: Model,
        /// Model file (defaults to <out>/<model>_model.json)
        #[arg(long = "model-file")]
        model_file: Option<PathBuf>,
        #[arg(long)]
        series: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score sliding windows and flag the most isolated ones
    Detect {
        #[arg(long)]
        series: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Label deviations as anomaly or adaptation
    Classify {
        /// Context sample CSV
        #[arg(long)]
        samples: PathBuf,
        /// Train a tree from the (labeled) samples instead of loading one
        #[arg(long)]
        train: bool,
        /// Tree file to load, or where to save a trained tree
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Holiday dates, one YYYY-MM-DD per line
        #[arg(long)]
        holidays: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the LSTM and SVR test forecasts
    Eval {
        #[arg(long)]
        lstm: Option<PathBuf>,
        #[arg(long)]
        svr: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Ingest { common, .. }
            | Command::Train { common, .. }
            | Command::Forecast { common, .. }
            | Command::Detect { common, .. }
            | Command::Classify { common, .. }
            | Command::Eval { common, .. } => common,
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<String> {
    let c = cli.command.common();
    let config = load_config(&CommonArgs {
        config: c.config.clone(),
        out: c.out.clone(),
        seed: c.seed,
        set: c.set.clone(),
    })?;
    let text = match &cli.command {
        Command::Ingest { input, .. } => cmd_ingest(&config, input.as_deref())?.to_string(),
        Command::Train { model, series, .. } => {
            cmd_train(&config, (*model).into(), series.as_deref())?.to_string()
        }
        Command::Forecast {
            model,
            model_file,
            series,
            ..
        } => cmd_forecast(&config, (*model).into(), model_file.as_deref(), series.as_deref())?.to_string(),
        Command::Detect { series, .. } => cmd_detect(&config, series.as_deref())?.to_string(),
        Command::Classify {
            samples,
            train,
            tree,
            holidays,
            ..
        } => cmd_classify(&config, samples, *train, tree.as_deref(), holidays.as_deref())?.to_string(),
        Command::Eval { lstm, svr, .. } => cmd_eval(&config, lstm.as_deref(), svr.as_deref())?.to_string(),
    };
    Ok(text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
