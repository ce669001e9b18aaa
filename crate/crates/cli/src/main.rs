use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ipdfp_cli::{run_task, CliError, RunConfig, Task};

#[derive(Parser)]
#[command(name = "ipdfp", version, about = "Inertial primal-dual fixed point experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// L1 data term plus total variation on a PGM image
    Denoise(Overrides),
    /// l1-regularized logistic regression on a LibSVM file
    Logreg(Overrides),
    /// Check step sizes and relaxation without solving
    Validate(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// Flat key = value configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Input image or dataset
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Dual update rule: condat or as_written
    #[arg(long)]
    rule: Option<String>,
    /// Step metric: scalar or diagonal
    #[arg(long)]
    metric: Option<String>,
    /// Exponent of the diagonal metric, in [0, 2]
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Any other configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(&self, task: Task) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::new(task);
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            config.apply(k.trim(), v, None)?;
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let flags = [
            ("out", path(&self.out)),
            ("input", path(&self.input)),
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("rule", self.rule.clone()),
            ("metric", self.metric.clone()),
            ("s", self.s.map(|v| v.to_string())),
            ("max_iter", self.max_iter.map(|v| v.to_string())),
            ("tol", self.tol.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                config.apply(key, &v, None)?;
            }
        }
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, overrides) = match &cli.command {
        Command::Denoise(o) => (Task::Denoise, o),
        Command::Logreg(o) => (Task::Logreg, o),
        Command::Validate(o) => (Task::Validate, o),
    };
    let result = overrides.resolve(task).and_then(|c| run_task(&c));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.text());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
