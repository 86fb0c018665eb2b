//! `csfilter`: batch pipeline driver.
//!
//! Exit codes: 0 on success (including `--help`/`--version`), 1 for usage,
//! configuration, or data-contract errors, 2 for I/O failures. Every
//! command produces byte-identical outputs for a given input and
//! configuration, regardless of `--workers`.

mod cli;
mod commands;
mod config;
mod report;

use anyhow::Context;
use clap::Parser;

use cli::{Cli, Command};
use config::PipelineConfig;

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let parsed = match Cli::try_parse() {
        Ok(parsed) => parsed,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    match run(parsed) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_code_for(&err)
        }
    }
}

/// I/O failures exit 2; everything else (usage, config, data contracts)
/// exits 1.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(parsed: Cli) -> anyhow::Result<()> {
    let (mut cfg, _config_path) = PipelineConfig::load(parsed.config.as_deref())?;
    if let Some(workers) = parsed.workers {
        cfg.workers = workers;
    }
    cfg.validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;
    pool.install(|| match &parsed.command {
        Command::Chunk(args) => commands::run_chunk(args, &cfg),
        Command::Filter(args) => commands::run_filter_cmd(args, &cfg),
        Command::Eval(args) => commands::run_eval(args, &cfg),
        Command::Analyze(args) => commands::run_analyze(args, &cfg),
        Command::Kdcheck(args) => commands::run_kdcheck(args, &cfg),
        Command::Synth(args) => commands::run_synth(args, &cfg),
    })
}
