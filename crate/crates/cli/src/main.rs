mod args;
mod commands;
mod error;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = args::Cli::parse();
    if let Err(e) = commands::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
