//! Argument grammar and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands;
use crate::commands::simulate::Generator;
use crate::commands::tune::Method;
use crate::error::CliError;

/// Ensemble echo-state forecasting for gridded space-time fields.
#[derive(Parser)]
#[command(name = "reservoir-cast", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic field series from one of the bundled generators.
    Simulate {
        /// Generator to draw from.
        #[arg(long, value_enum)]
        model: Generator,
        /// Experiment config; its `simulate` block and `base_seed` apply.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (field.csv, locations.csv, truth.json).
        #[arg(long)]
        out: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the configured model and write a model directory.
    Train {
        /// Experiment config naming the model and its hyperparameters.
        #[arg(long)]
        config: PathBuf,
        /// Training field (`time,loc,value` CSV).
        #[arg(long)]
        data: PathBuf,
        /// Location table (`loc,x,y` CSV).
        #[arg(long)]
        locations: PathBuf,
        /// Model directory to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Forecast ahead from the end of a history with a trained model.
    Forecast {
        /// Model directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// History to forecast from (`time,loc,value` CSV on the training
        /// locations).
        #[arg(long)]
        data: PathBuf,
        /// Steps past the last history time.
        #[arg(long)]
        horizon: usize,
        /// Output directory (members.csv, summary.csv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a forecast directory against observed truth.
    Evaluate {
        /// Forecast directory written by `forecast`.
        #[arg(long)]
        forecast: PathBuf,
        /// Observed field (`time,loc,value` CSV) covering the forecast
        /// cells.
        #[arg(long)]
        truth: PathBuf,
        /// Output directory (scores.json, per_lead.csv).
        #[arg(long)]
        out: PathBuf,
    },
    /// Search hyperparameters and write a ready-to-train config.
    Tune {
        /// Experiment config to start from.
        #[arg(long)]
        config: PathBuf,
        /// Tuning field (`time,loc,value` CSV).
        #[arg(long)]
        data: PathBuf,
        /// Location table (`loc,x,y` CSV).
        #[arg(long)]
        locations: PathBuf,
        /// Search strategy; must match the config's model.
        #[arg(long, value_enum)]
        method: Method,
        /// Output directory (selected.json, report.json).
        #[arg(long)]
        out: PathBuf,
    },
}

impl Cli {
    pub fn run(self) -> Result<(), CliError> {
        match self.command {
            Command::Simulate {
                model,
                config,
                out,
                seed,
            } => commands::simulate::run(model, config.as_deref(), &out, seed),
            Command::Train {
                config,
                data,
                locations,
                out,
            } => commands::train::run(&config, &data, &locations, &out),
            Command::Forecast {
                model,
                data,
                horizon,
                out,
            } => commands::forecast::run(&model, &data, horizon, &out),
            Command::Evaluate {
                forecast,
                truth,
                out,
            } => commands::evaluate::run(&forecast, &truth, &out),
            Command::Tune {
                config,
                data,
                locations,
                method,
                out,
            } => commands::tune::run(&config, &data, &locations, method, &out),
        }
    }
}
