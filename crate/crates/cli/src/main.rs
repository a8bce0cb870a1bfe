use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use neurocam::pipeline::commands::{self, HwDemo};
use neurocam::pipeline::Config;
use neurocam::Error;
use serde_json::json;

/// Neuromorphic smart-camera simulator.
#[derive(Debug, Parser)]
#[command(name = "neurocam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the configured scene as PGM frames plus ground truth.
    GenScene {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the reservoir equalizer on the channel task.
    Filter {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the region detector and write model.json.
    TrainNet {
        /// Defaults to the bundled configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract one spatial tuple per frame.
    Track {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Search every frame exhaustively.
        #[arg(long)]
        no_prior: bool,
        /// Search grid source; defaults to the bundled configuration.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Predict each motion variable of a tuple CSV and flag anomalies.
    Predict {
        #[arg(long)]
        tuples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one hardware neuron demo.
    Hw {
        #[arg(long, value_enum)]
        demo: Demo,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run every stage and write the full report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Demo {
    Mtj,
    Crossbar,
    Digital,
    Retention,
}

impl From<Demo> for HwDemo {
    fn from(d: Demo) -> Self {
        match d {
            Demo::Mtj => HwDemo::Mtj,
            Demo::Crossbar => HwDemo::Crossbar,
            Demo::Digital => HwDemo::Digital,
            Demo::Retention => HwDemo::Retention,
        }
    }
}

fn config(path: Option<&Path>) -> neurocam::Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::bundled()),
    }
}

fn dispatch(cmd: Command) -> neurocam::Result<serde_json::Value> {
    let v = match cmd {
        Command::GenScene { config: c, out } => {
            serde_json::to_value(commands::gen_scene(&Config::load(c)?, &out)?)
        }
        Command::Filter { config: c, out } => {
            serde_json::to_value(commands::filter(&Config::load(c)?, &out)?)
        }
        Command::TrainNet { config: c, out } => {
            serde_json::to_value(commands::train_net(&config(c.as_deref())?, &out)?)
        }
        Command::Track {
            frames,
            model,
            out,
            no_prior,
            config: c,
        } => serde_json::to_value(commands::track(
            &config(c.as_deref())?,
            &frames,
            &model,
            !no_prior,
            &out,
        )?),
        Command::Predict {
            tuples,
            out,
            config: c,
        } => serde_json::to_value(commands::predict(&config(c.as_deref())?, &tuples, &out)?),
        Command::Hw {
            demo,
            out,
            config: c,
        } => serde_json::to_value(commands::hw(&config(c.as_deref())?, demo.into(), &out)?),
        Command::Run { config: c, out } => serde_json::to_value(commands::run(&c, &out)?),
    };
    Ok(v?)
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::Stage { stage, source } = e {
        v["stage"] = json!(stage);
        v["cause"] = json!(source.kind());
    }
    v
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": "usage", "message": msg.trim_end() }));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(report) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
