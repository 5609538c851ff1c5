mod commands;
mod config;

use anyhow::{Context as _, Result};
use clap::Parser;

use commands::Env;
use config::{Cli, Command, FileConfig};

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let globals = file.globals(&cli.global)?;
    if let Some(n) = globals.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let ctx = Env::new(&globals)?;
    std::fs::create_dir_all(&ctx.out_dir).with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let name = cli.command.section();
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, &file.section(name, a)?),
        Command::Stats(a) => commands::stats(&ctx, &file.section(name, a)?),
        Command::FitIntensity(a) => commands::fit_intensity(&ctx, &file.section(name, a)?),
        Command::FitGlobal(a) => commands::fit_global_cmd(&ctx, &file.section(name, a)?),
        Command::FitLocal(a) => commands::fit_local_cmd(&ctx, &file.section(name, a)?),
        Command::Diagnose(a) => commands::diagnose(&ctx, &file.section(name, a)?),
        Command::Replicate(a) => commands::replicate(&ctx, &file.section(name, a)?),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
