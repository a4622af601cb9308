mod args;
mod commands;
mod config;
mod formats;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, GlobalOpts};
use config::PipelineConfig;

/// Bad invocation or configuration; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn build_config(g: &GlobalOpts) -> Result<PipelineConfig, UsageError> {
    let mut c = match &g.config {
        Some(p) => PipelineConfig::load(p).map_err(UsageError)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(b) = &g.backend {
        c.set("backend", b).map_err(UsageError)?;
    }
    if let Some(x) = g.snorm_x {
        c.snorm_x = x;
    }
    if let Some(p) = g.dcf_ptarget {
        c.dcf_ptarget = p;
    }
    c.validate().map_err(UsageError)?;
    Ok(c)
}

fn init_threads() -> Result<(), UsageError> {
    let Ok(v) = std::env::var("SVKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| UsageError(format!("SVKIT_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| UsageError(e.to_string()))
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    init_threads()?;
    let cfg = build_config(&cli.global)?;
    match &cli.command {
        Command::Feats(a) => commands::feats(a, &cfg),
        Command::Vad(a) => commands::vad(a, &cfg),
        Command::Embed(a) => commands::embed(a, &cfg),
        Command::TrainPlda(a) => commands::train_plda(a, &cfg),
        Command::Score(a) => commands::score(a, &cfg),
        Command::Snorm(a) => commands::snorm(a, &cfg),
        Command::Calibrate(a) => commands::calibrate(a, &cfg),
        Command::Fuse(a) => commands::fuse(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::Synth(a) => commands::synth(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
