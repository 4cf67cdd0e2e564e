//! The `dgh` command line: each subcommand is one pipeline stage, prints a
//! single JSON line and exits 0 on success, 1 on a runtime failure and 2 on
//! bad arguments.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod selftest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{resolve, PipelineConfig};
pub use error::{CliError, Result};
pub use pipeline::Workspace;

#[derive(Debug, Parser)]
#[command(name = "dgh", version, about = "Dynamic hair toy pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config; missing keys keep their defaults.
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set dynamics.coarse_train.steps=100`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = config::parse_override)]
    pub set: Vec<(Vec<String>, Value)>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Working directory shared by every stage.
    #[arg(long, value_name = "DIR", default_value = "dgh_out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the toy scene and simulate the training and test motions.
    Simulate(Common),
    /// Write a hair distance volume for a groom file.
    Voxelize {
        #[command(flatten)]
        common: Common,
        /// Groom to voxelize (default: the canonical groom).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Also write the body distance field at the rest pose.
        #[arg(long)]
        body: bool,
    },
    /// Fit the pose-driven displacement model to the training sequences.
    TrainCoarse(Common),
    /// Fit the recurrent flow model to the training sequences.
    TrainFine(Common),
    /// Fit the appearance decoder to rendered views of training frames.
    TrainAppearance(Common),
    /// Predict every test sequence from its head motion.
    Infer(Common),
    /// Render predicted and ground-truth frames from the camera rig.
    Render(Common),
    /// Score predictions, or compare two files or sequence directories.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        gt: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Voxelize { .. } => "voxelize",
            Command::TrainCoarse(_) => "train-coarse",
            Command::TrainFine(_) => "train-fine",
            Command::TrainAppearance(_) => "train-appearance",
            Command::Infer(_) => "infer",
            Command::Render(_) => "render",
            Command::Eval { .. } => "eval",
            Command::Selftest(_) => "selftest",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::TrainCoarse(c)
            | Command::TrainFine(c)
            | Command::TrainAppearance(c)
            | Command::Infer(c)
            | Command::Render(c)
            | Command::Selftest(c) => c,
            Command::Voxelize { common, .. } | Command::Eval { common, .. } => common,
        }
    }
}

/// What the process should print and return.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn with_command(name: &str, mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.insert("command".into(), Value::String(name.into()));
    }
    v
}

/// Runs an already parsed command.
pub fn execute(cmd: &Command) -> Result<(i32, Value)> {
    let c = cmd.common();
    let cfg = resolve(c.config.as_deref(), &c.set, c.seed)?;
    let ws = Workspace::new(c.out.clone(), cfg);
    let value = match cmd {
        Command::Simulate(_) => ws.simulate()?,
        Command::Voxelize { input, body, .. } => ws.voxelize(input.as_deref(), *body)?,
        Command::TrainCoarse(_) => ws.train_coarse()?,
        Command::TrainFine(_) => ws.train_fine()?,
        Command::TrainAppearance(_) => ws.train_appearance()?,
        Command::Infer(_) => ws.infer()?,
        Command::Render(_) => ws.render()?,
        Command::Eval { pred, gt, .. } => match (pred, gt) {
            (Some(p), Some(g)) => ws.eval_pair(p, g)?,
            _ => ws.eval_pipeline()?,
        },
        Command::Selftest(_) => {
            let results = selftest::run_all(&ws.path("selftest"));
            let failed = results.iter().filter(|r| !r.ok).count();
            let v = json!({ "ok": failed == 0, "passed": results.len() - failed, "failed": failed, "checks": results });
            return Ok((i32::from(failed > 0), with_command(cmd.name(), v)));
        }
    };
    Ok((0, with_command(cmd.name(), value)))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return match e.use_stderr() {
                true => Outcome {
                    code: 2,
                    stdout: String::new(),
                    stderr: text,
                },
                false => Outcome {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                },
            };
        }
    };
    let (code, value) = match execute(&cli.command) {
        Ok(r) => r,
        Err(e) => (1, e.to_json()),
    };
    Outcome {
        code,
        stdout: format!("{value}\n"),
        stderr: String::new(),
    }
}
