use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use duet_cli::commands::{cmd_probs, cmd_replay, cmd_sweep, load_config};
use duet_cli::{serve, Cli, Command, ServeArgs};

fn run_serve(args: &ServeArgs) -> anyhow::Result<()> {
    let config = load_config(args.config.as_deref(), args.seed)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on ws://{addr}/ws");
        serve::run(listener, config).await
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Replay(args) => cmd_replay(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Probs(args) => cmd_probs(args),
        Command::Serve(args) => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
                .init();
            run_serve(args)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
